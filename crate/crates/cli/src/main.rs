//! `hillspec`: command-line front end emitting JSON or CSV.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hillspec::{HillError, PotentialParams};

#[derive(Parser, Debug)]
#[command(name = "hillspec", version, about = "Spectral analysis of the Hill operator with optical potential (1+2V)e^{2ix} + (1-2V)e^{-2ix}")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Coupling {
    /// Potential strength V > 1/2
    #[arg(long = "V", allow_negative_numbers = true)]
    pub v: Option<f64>,
    /// Coupling c = sqrt(4V^2 - 1) >= 0
    #[arg(long = "c", allow_negative_numbers = true)]
    pub c: Option<f64>,
}

impl Coupling {
    pub fn params(&self) -> hillspec::Result<PotentialParams> {
        match (self.v, self.c) {
            (Some(v), None) => PotentialParams::from_v(v),
            (None, Some(c)) => PotentialParams::from_c(c),
            _ => Err(HillError::Domain("exactly one of --V and --c is required".into())),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutputOpts {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpectrumChoice {
    Periodic,
    Antiperiodic,
    Dirichlet,
    Neumann,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassKind {
    Periodic,
    Antiperiodic,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExpansionForm {
    /// Integral over quasimomentum
    T,
    /// Contour integral over the bands in lambda
    Lambda,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hill discriminant F and F' on a lambda grid
    Disc {
        #[command(flatten)]
        coupling: Coupling,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lmin: f64,
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        lmax: f64,
        /// Number of grid points
        #[arg(long, default_value_t = 11)]
        n: usize,
        /// Constant imaginary part of the grid
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        im: f64,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Bloch bands lambda_n(t), their double points and real segments
    Bands {
        #[command(flatten)]
        coupling: Coupling,
        #[arg(long, default_value_t = 4)]
        nmax: usize,
        /// Initial uniform t grid; refined adaptively
        #[arg(long = "t-points", default_value_t = 33)]
        t_points: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Periodic, antiperiodic, Dirichlet or Neumann eigenvalues
    Spectrum {
        #[command(flatten)]
        coupling: Coupling,
        #[arg(long, value_enum, default_value_t = SpectrumChoice::Periodic)]
        kind: SpectrumChoice,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Critical points V_k, k = 2..=kmax
    Critical {
        #[arg(long, default_value_t = 2)]
        kmax: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// PD/PN or AD/AN tags of 2-periodic eigenvalues
    Classify {
        #[command(flatten)]
        coupling: Coupling,
        #[arg(long, value_enum, default_value_t = ClassKind::Periodic)]
        kind: ClassKind,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Spectral singularities and ESS touching bands 1..=nmax
    Singularities {
        #[command(flatten)]
        coupling: Coupling,
        #[arg(long, default_value_t = 12)]
        nmax: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Reconstruct f from its spectral expansion
    Expand {
        #[command(flatten)]
        coupling: Coupling,
        /// CSV with header x,f_re,f_im on a uniform x grid
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value_t = 24)]
        nbands: usize,
        #[arg(long = "t-points", default_value_t = 256)]
        t_points: usize,
        #[arg(long, value_enum, default_value_t = ExpansionForm::T)]
        form: ExpansionForm,
        /// Linear instead of cubic interpolation of f
        #[arg(long)]
        linear: bool,
        /// Bands integrated jointly with epsilon-excision, e.g. 1,2.
        /// Without it, bands touching a detected ESS are grouped.
        #[arg(long, value_delimiter = ',')]
        group: Option<Vec<usize>>,
        /// Disable automatic grouping
        #[arg(long, conflicts_with = "group")]
        no_group: bool,
        /// Excision sequence eps_j = 2^-j for j = jmin..=jmax
        #[arg(long, default_value_t = 3)]
        jmin: i32,
        #[arg(long, default_value_t = 12)]
        jmax: i32,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Reality of periodic eigenvalues and bands across a V grid
    Scan {
        #[arg(long, default_value_t = 0.55)]
        vmin: f64,
        #[arg(long, default_value_t = 1.5)]
        vmax: f64,
        #[arg(long, default_value_t = 20)]
        nv: usize,
        #[arg(long, default_value_t = 6)]
        nmax: usize,
        #[command(flatten)]
        out: OutputOpts,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var("HILLSPEC_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HillError>() {
        Some(e) if e.is_domain() => 2,
        Some(_) => 3,
        None if err.downcast_ref::<commands::UsageError>().is_some() => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Disc { coupling, lmin, lmax, n, im, out } => commands::disc(&coupling, lmin, lmax, n, im, &out),
        Command::Bands { coupling, nmax, t_points, out } => commands::bands(&coupling, nmax, t_points, &out),
        Command::Spectrum { coupling, kind, count, out } => commands::spectrum(&coupling, kind, count, &out),
        Command::Critical { kmax, out } => commands::critical(kmax, &out),
        Command::Classify { coupling, kind, count, out } => commands::classify(&coupling, kind, count, &out),
        Command::Singularities { coupling, nmax, out } => commands::singularities(&coupling, nmax, &out),
        Command::Expand { coupling, f, nbands, t_points, form, linear, group, no_group, jmin, jmax, out } => {
            let opts = commands::ExpandOpts { f, nbands, t_points, form, linear, group, no_group, jmin, jmax };
            commands::expand(&coupling, &opts, &out)
        }
        Command::Scan { vmin, vmax, nv, nmax, out } => commands::scan(vmin, vmax, nv, nmax, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
