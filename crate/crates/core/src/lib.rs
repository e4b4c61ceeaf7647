//! Spectral analysis of the Hill operator `-y'' + q y` with the optical
//! potential `q(x) = (1+2V)e^{2ix} + (1-2V)e^{-2ix}`, `V > 1/2`.
//!
//! The potential is spectrally equivalent to `2ic cos 2x` with
//! `c = sqrt(4V² - 1)`, which is what the solvers use internally.
//!
//! Modules, bottom up: [`hill_core`] (discriminant by shooting),
//! [`matrix_oracle`] (truncated Fourier systems), [`bloch_bands`],
//! [`boundary_spectra`] (Dirichlet/Neumann and the PD/PN/AD/AN classes),
//! [`critical_points`] and [`expansion`].
//!
//! ```
//! use hillspec::{discriminant, PotentialParams};
//! use num_complex::Complex64;
//!
//! let p = PotentialParams::from_c(0.0).unwrap();
//! let (f, _) = discriminant(&p, Complex64::new(4.0, 0.0)).unwrap();
//! assert!((f.re - 2.0).abs() < 1e-10);
//! ```

pub mod error;
pub mod hill_core;
pub mod bloch_bands;
pub mod boundary_spectra;
pub mod critical_points;
pub mod expansion;
pub mod matrix_oracle;
mod ode;

pub use error::{HillError, Result};
pub use hill_core::{
    discriminant, discriminant_second_derivative, fundamental, make_params, solutions_at, FundamentalData,
    PotentialForm, PotentialParams,
};
pub use matrix_oracle::{
    bloch_eigenvalues, boundary_eigenvalues, count_in_regions, disk_cover_check, BoundaryKind, CountKind,
    DiskCoverReport, RegionCounts, SystemKind, TruncatedSystem,
};
pub use bloch_bands::{
    bloch_point, continue_from, find_double_point, periodic_spectrum, antiperiodic_spectrum, real_spectrum, refine,
    trace_band, Band, BlochPoint, DoublePoint, RealSpectrum,
};
pub use boundary_spectra::{
    ad_imag_asymptote, classified_spectrum, classify, dirichlet_spectrum, neumann_spectrum, pd_pn_splitting,
    ClassifiedEigenvalue, EigenClass, SpectrumKind,
};
pub use critical_points::{collision_gap, find_critical, reality_scan, CollisionGap, CriticalPoint, RealityRow};
pub use expansion::{
    coefficient_a, detect_singularities, eigen_pair, projection_norm, reconstruct, reconstruct_lambda_form, EigenPair,
    Grouping, Reconstruction, SampledFunction, SingularityKind, SingularityReport,
};
pub use num_complex::Complex64;
