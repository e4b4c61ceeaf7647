//! Fundamental solutions and the Hill discriminant.
//!
//! The operator is `-y'' + q y = λ y` on `[0, π]` with either the optical
//! potential `q = (1+2V)e^{2ix} + (1-2V)e^{-2ix}` or the equivalent shifted
//! form `q = 2ic cos 2x`, `c = sqrt(4V² - 1)`. Both share the same discriminant;
//! the shifted form is used everywhere except for the equivalence check.

use std::f64::consts::PI;

use num_complex::Complex64 as C;

use crate::error::{HillError, Result};
use crate::ode::{Dopri, DEFAULT_TOL};

/// Coupling of the potential together with the index thresholds that
/// separate the low-lying (rectangle) eigenvalues from the disk ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub v: f64,
    pub c: f64,
    /// Shift taking the optical potential to `2ic cos 2x`; undefined at `c = 0`.
    pub alpha: Option<C>,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

// The thresholds sit exactly on integers for the interesting couplings
// (c = 2 from V = √5/2), where c carries a rounding error of a few ulps.
fn floor_tol(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

impl PotentialParams {
    /// Builds the parameters from `V > 1/2`.
    pub fn from_v(v: f64) -> Result<Self> {
        if !v.is_finite() || v <= 0.5 {
            return Err(HillError::Domain(format!("V must be finite and > 1/2, got {v}")));
        }
        let c = ((2.0 * v - 1.0) * (2.0 * v + 1.0)).sqrt();
        let alpha = C::new(-PI / 2.0, 0.5 * ((2.0 * v - 1.0) / (2.0 * v + 1.0)).ln());
        Ok(Self::with(v, c, Some(alpha)))
    }

    /// Builds the parameters from the shifted coupling `c >= 0`. `c = 0` is the
    /// free operator, which is accepted here for testing.
    pub fn from_c(c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(HillError::Domain(format!("c must be finite and >= 0, got {c}")));
        }
        let v = 0.5 * (c * c + 1.0).sqrt();
        if c == 0.0 {
            return Ok(Self::with(v, c, None));
        }
        let alpha = C::new(-PI / 2.0, 0.5 * ((2.0 * v - 1.0) / (2.0 * v + 1.0)).ln());
        Ok(Self::with(v, c, Some(alpha)))
    }

    fn with(v: f64, c: f64, alpha: Option<C>) -> Self {
        PotentialParams {
            v,
            c,
            alpha,
            n1: floor_tol((c + 1.0) / 2.0),
            n2: floor_tol(c / 2.0),
            n3: floor_tol((2.0 * c + 1.0) / 2.0) + 1,
        }
    }

    /// The Fourier coupling `a = ic` of the shifted potential.
    pub fn coupling(&self) -> C {
        C::new(0.0, self.c)
    }
}

/// Same as [`PotentialParams::from_v`].
pub fn make_params(v: f64) -> Result<PotentialParams> {
    PotentialParams::from_v(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialForm {
    /// `2ic cos 2x`
    #[default]
    Shifted,
    /// `(1+2V)e^{2ix} + (1-2V)e^{-2ix}`
    Optical,
}

impl PotentialForm {
    #[inline]
    fn eval(self, p: &PotentialParams, x: f64) -> C {
        match self {
            PotentialForm::Shifted => C::new(0.0, 2.0 * p.c * (2.0 * x).cos()),
            PotentialForm::Optical => {
                let (s, c) = (2.0 * x).sin_cos();
                // (1+2V)(c + is) + (1-2V)(c - is)
                C::new(2.0 * c, 4.0 * p.v * s)
            }
        }
    }
}

/// Values at `x = π` of the solutions with `θ(0)=1, θ'(0)=0, φ(0)=0, φ'(0)=1`
/// and their `λ`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalData {
    pub lambda: C,
    pub theta: C,
    pub theta_prime: C,
    pub phi: C,
    pub phi_prime: C,
    pub d_theta: C,
    pub d_theta_prime: C,
    pub d_phi: C,
    pub d_phi_prime: C,
    pub f: C,
    pub f_prime: C,
}

impl FundamentalData {
    pub fn wronskian(&self) -> C {
        self.theta * self.phi_prime - self.theta_prime * self.phi
    }

    /// Size of the products entering the Wronskian; sets its attainable accuracy.
    pub fn wronskian_scale(&self) -> f64 {
        (self.theta * self.phi_prime).norm() + (self.theta_prime * self.phi).norm()
    }

    /// Monodromy matrix `[[θ, φ], [θ', φ']]` at `x = π`.
    pub fn monodromy(&self) -> [[C; 2]; 2] {
        [[self.theta, self.phi], [self.theta_prime, self.phi_prime]]
    }

    /// `F² − 4` written as `(θ − φ')² + 4θ'φ`, which keeps full relative
    /// accuracy near `F = ±2` where the direct form cancels.
    pub fn f_squared_minus_four(&self) -> C {
        let d = self.theta - self.phi_prime;
        d * d + self.theta_prime * self.phi * 4.0
    }

    /// `F + 2`, accurate near `F = −2`.
    pub fn f_plus_two(&self) -> C {
        if self.f.re < 0.0 {
            self.f_squared_minus_four() / (self.f - 2.0)
        } else {
            self.f + 2.0
        }
    }

    /// Rounding-level uncertainty of [`Self::f_plus_two`] and
    /// [`Self::two_minus_f`] near `F = ∓2`. Below it the sign is unknown.
    pub fn pm_two_uncertainty(&self) -> f64 {
        const E: f64 = 1e-13;
        let spread = self.theta_prime.norm() + self.phi.norm() + (self.theta - self.phi_prime).norm() + E;
        4.0 * E * spread / 2.0
    }

    /// `2 − F`, accurate near `F = 2`.
    pub fn two_minus_f(&self) -> C {
        if self.f.re > 0.0 {
            -self.f_squared_minus_four() / (self.f + 2.0)
        } else {
            2.0 - self.f
        }
    }
}

fn initial_step(lambda: C, c: f64) -> f64 {
    0.1 / (1.0 + lambda.norm().sqrt() + c.sqrt())
}

/// Integrates the fundamental system and its `λ`-variational system over `[0, π]`.
pub fn fundamental(params: &PotentialParams, lambda: C, form: PotentialForm) -> Result<FundamentalData> {
    if !(lambda.re.is_finite() && lambda.im.is_finite()) {
        return Err(HillError::Domain(format!("lambda must be finite, got {lambda}")));
    }
    let p = *params;
    // [θ, θ', φ, φ', θ_λ, θ'_λ, φ_λ, φ'_λ]
    let rhs = move |x: f64, y: &[C; 8]| {
        let w = form.eval(&p, x) - lambda;
        [
            y[1],
            w * y[0],
            y[3],
            w * y[2],
            y[5],
            w * y[4] - y[0],
            y[7],
            w * y[6] - y[2],
        ]
    };
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    let mut y = [one, zero, zero, one, zero, zero, zero, zero];
    let mut solver = Dopri::new(DEFAULT_TOL, initial_step(lambda, p.c));
    solver.advance(&rhs, 0.0, PI, &mut y)?;
    Ok(FundamentalData {
        lambda,
        theta: y[0],
        theta_prime: y[1],
        phi: y[2],
        phi_prime: y[3],
        d_theta: y[4],
        d_theta_prime: y[5],
        d_phi: y[6],
        d_phi_prime: y[7],
        f: y[3] + y[0],
        f_prime: y[7] + y[4],
    })
}

/// `(F(λ), F'(λ))` for the shifted potential.
pub fn discriminant(params: &PotentialParams, lambda: C) -> Result<(C, C)> {
    let d = fundamental(params, lambda, PotentialForm::Shifted)?;
    Ok((d.f, d.f_prime))
}

/// Step used for finite differences in `λ`.
pub fn fd_step(lambda: C) -> f64 {
    1e-4 * lambda.norm().max(1.0)
}

/// `F''(λ)` by central differences of `F'`.
pub fn discriminant_second_derivative(params: &PotentialParams, lambda: C) -> Result<C> {
    let h = fd_step(lambda);
    let (_, fp_plus) = discriminant(params, lambda + h)?;
    let (_, fp_minus) = discriminant(params, lambda - h)?;
    Ok((fp_plus - fp_minus) / (2.0 * h))
}

/// `θ(x, λ)` and `φ(x, λ)` at the given points (any order, either side of 0).
///
/// The potential is even, so `θ` is even and `φ` odd in `x`; one forward
/// sweep over `|x|` serves both sides.
pub fn solutions_at(params: &PotentialParams, lambda: C, xs: &[f64]) -> Result<Vec<(C, C)>> {
    let p = *params;
    let rhs = move |x: f64, y: &[C; 4]| {
        let w = PotentialForm::Shifted.eval(&p, x) - lambda;
        [y[1], w * y[0], y[3], w * y[2]]
    };
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    let mut out = vec![(zero, zero); xs.len()];

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs()));
    let mut y = [one, zero, zero, one];
    let mut x = 0.0;
    let mut solver = Dopri::new(DEFAULT_TOL, initial_step(lambda, p.c));
    for &i in &order {
        let target = xs[i].abs();
        if target > x {
            solver.advance(&rhs, x, target, &mut y)?;
            x = target;
        }
        out[i] = if xs[i] < 0.0 { (y[0], -y[2]) } else { (y[0], y[2]) };
    }
    Ok(out)
}
