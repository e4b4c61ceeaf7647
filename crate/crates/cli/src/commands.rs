use std::fmt;
use std::path::PathBuf;

use anyhow::{Context, Result};
use hillspec::bloch_bands::{refine_lenient, uniform_grid};
use hillspec::critical_points::reality_loss_is_monotone;
use hillspec::expansion::{ess_points, Interpolation};
use hillspec::{
    antiperiodic_spectrum, classified_spectrum, detect_singularities, dirichlet_spectrum, discriminant,
    find_critical, find_double_point, neumann_spectrum, periodic_spectrum, reality_scan, reconstruct,
    reconstruct_lambda_form, trace_band, Complex64 as C, Grouping, HillError, PotentialParams, SampledFunction,
    SpectrumKind,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::emit;
use crate::{ClassKind, Coupling, ExpansionForm, OutputOpts, SpectrumChoice};

/// Bad arguments that clap cannot check on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "usage: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Serialize)]
struct Header {
    command: &'static str,
    #[serde(rename = "V")]
    v: f64,
    c: f64,
}

fn header(command: &'static str, p: &PotentialParams) -> Header {
    Header { command, v: p.v, c: p.c }
}

#[derive(Serialize)]
struct Doc<'a, R: Serialize> {
    #[serde(flatten)]
    header: Header,
    rows: &'a [R],
}

#[derive(Serialize)]
struct DiscRow {
    lambda_re: f64,
    lambda_im: f64,
    #[serde(rename = "F_re")]
    f_re: f64,
    #[serde(rename = "F_im")]
    f_im: f64,
    #[serde(rename = "Fp_re")]
    fp_re: f64,
    #[serde(rename = "Fp_im")]
    fp_im: f64,
}

pub fn disc(coupling: &Coupling, lmin: f64, lmax: f64, n: usize, im: f64, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if n == 0 || !(lmax >= lmin) {
        return Err(usage("need --n >= 1 and --lmax >= --lmin"));
    }
    let rows: Vec<DiscRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let re = if n == 1 { lmin } else { lmin + (lmax - lmin) * i as f64 / (n - 1) as f64 };
            let lambda = C::new(re, im);
            let (f, fp) = discriminant(&p, lambda)?;
            Ok(DiscRow { lambda_re: re, lambda_im: im, f_re: f.re, f_im: f.im, fp_re: fp.re, fp_im: fp.im })
        })
        .collect::<hillspec::Result<_>>()?;
    emit(out, &Doc { header: header("disc", &p), rows: &rows }, &rows)
}

#[derive(Serialize, Clone, Copy)]
struct BandRow {
    n: usize,
    t: f64,
    lambda_re: f64,
    lambda_im: f64,
}

#[derive(Serialize)]
struct BandSummary {
    n: usize,
    real_segment: Option<(f64, f64)>,
    real_range: Option<(f64, f64)>,
    samples: Vec<BandRow>,
}

#[derive(Serialize)]
struct DoublePointRow {
    k: usize,
    t: f64,
    one_minus_t: f64,
    lambda: f64,
    f_second_re: f64,
    f_second_im: f64,
}

#[derive(Serialize)]
struct BandsDoc {
    #[serde(flatten)]
    header: Header,
    bands: Vec<BandSummary>,
    double_points: Vec<DoublePointRow>,
}

pub fn bands(coupling: &Coupling, nmax: usize, t_points: usize, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if nmax == 0 || t_points < 2 {
        return Err(usage("need --nmax >= 1 and --t-points >= 2"));
    }
    let grid = uniform_grid(t_points);
    let mut summaries = Vec::with_capacity(nmax);
    for n in 1..=nmax {
        let band = trace_band(&p, n, &grid)?;
        let samples = band
            .samples
            .iter()
            .map(|s| BandRow { n, t: s.t, lambda_re: s.lambda.re, lambda_im: s.lambda.im })
            .collect();
        summaries.push(BandSummary { n, real_segment: band.real_segment, real_range: band.real_range(), samples });
    }
    let mut double_points = Vec::new();
    for k in 1..=nmax / 2 {
        match find_double_point(&p, k) {
            Ok(d) => double_points.push(DoublePointRow { k, t: d.t, one_minus_t: d.one_minus_t, lambda: d.lambda, f_second_re: d.f_second.re, f_second_im: d.f_second.im }),
            Err(HillError::NotFound(_) | HillError::Degenerate(_) | HillError::Regime(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let rows: Vec<BandRow> = summaries.iter().flat_map(|b| b.samples.iter().copied()).collect();
    let doc = BandsDoc { header: header("bands", &p), bands: summaries, double_points };
    emit(out, &doc, &rows)
}

#[derive(Serialize)]
struct EigenRow {
    index: usize,
    lambda_re: f64,
    lambda_im: f64,
}

#[derive(Serialize)]
struct SpectrumDoc<'a> {
    #[serde(flatten)]
    header: Header,
    kind: &'static str,
    rows: &'a [EigenRow],
}

pub fn spectrum(coupling: &Coupling, kind: SpectrumChoice, count: usize, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if count == 0 {
        return Err(usage("need --count >= 1"));
    }
    let (name, values) = match kind {
        SpectrumChoice::Periodic => ("periodic", refined(&p, 0.0, periodic_spectrum(&p, count)?)?),
        SpectrumChoice::Antiperiodic => ("antiperiodic", refined(&p, 1.0, antiperiodic_spectrum(&p, count)?)?),
        SpectrumChoice::Dirichlet => ("dirichlet", dirichlet_spectrum(&p, count)?),
        SpectrumChoice::Neumann => ("neumann", neumann_spectrum(&p, count)?),
    };
    let rows: Vec<EigenRow> = values
        .iter()
        .enumerate()
        .map(|(i, z)| EigenRow { index: i + 1, lambda_re: z.re, lambda_im: z.im })
        .collect();
    emit(out, &SpectrumDoc { header: header("spectrum", &p), kind: name, rows: &rows }, &rows)
}

fn refined(p: &PotentialParams, t: f64, seeds: Vec<C>) -> hillspec::Result<Vec<C>> {
    seeds.par_iter().map(|&s| Ok(refine_lenient(p, t, s)?.lambda)).collect()
}

#[derive(Serialize)]
struct CriticalRow {
    k: usize,
    c_k: f64,
    #[serde(rename = "V_k")]
    v_k: f64,
    lambda_star: f64,
    c_lo: f64,
    c_hi: f64,
    residual: f64,
    f_second: f64,
}

#[derive(Serialize)]
struct CriticalDoc<'a> {
    command: &'static str,
    critical_points: &'a [CriticalRow],
}

pub fn critical(kmax: usize, out: &OutputOpts) -> Result<()> {
    if kmax < 2 {
        return Err(HillError::Domain(format!("--kmax must be at least 2, got {kmax}")).into());
    }
    let mut rows = Vec::new();
    for k in 2..=kmax {
        let cp = find_critical(k).with_context(|| format!("critical point k = {k}"))?;
        rows.push(CriticalRow {
            k,
            c_k: cp.c_k,
            v_k: cp.v_k,
            lambda_star: cp.lambda_star,
            c_lo: cp.bracket.0,
            c_hi: cp.bracket.1,
            residual: cp.residual,
            f_second: cp.f_second,
        });
    }
    emit(out, &CriticalDoc { command: "critical", critical_points: &rows }, &rows)
}

#[derive(Serialize)]
struct ClassRow {
    index: usize,
    lambda_re: f64,
    lambda_im: f64,
    class: &'static str,
    /// Agreement of the residual test; empty when unresolvable
    residual_check: Option<bool>,
}

#[derive(Serialize)]
struct ClassDoc<'a> {
    #[serde(flatten)]
    header: Header,
    kind: &'static str,
    rows: &'a [ClassRow],
}

pub fn classify(coupling: &Coupling, kind: ClassKind, count: usize, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if count == 0 {
        return Err(usage("need --count >= 1"));
    }
    let (name, sk) = match kind {
        ClassKind::Periodic => ("periodic", SpectrumKind::Periodic),
        ClassKind::Antiperiodic => ("antiperiodic", SpectrumKind::Antiperiodic),
    };
    let rows: Vec<ClassRow> = classified_spectrum(&p, sk, count)?
        .into_iter()
        .map(|e| ClassRow {
            index: e.index,
            lambda_re: e.lambda.re,
            lambda_im: e.lambda.im,
            class: e.class.as_str(),
            residual_check: e.residual_check,
        })
        .collect();
    emit(out, &ClassDoc { header: header("classify", &p), kind: name, rows: &rows }, &rows)
}

#[derive(Serialize)]
struct SingularityRow {
    n: usize,
    t0: f64,
    kind: &'static str,
    lambda_re: f64,
    lambda_im: f64,
    decay_exponent: Option<f64>,
}

pub fn singularities(coupling: &Coupling, nmax: usize, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if nmax < 2 {
        return Err(usage("need --nmax >= 2"));
    }
    let rows: Vec<SingularityRow> = detect_singularities(&p, nmax)?
        .into_iter()
        .map(|s| SingularityRow {
            n: s.n,
            t0: s.t0,
            kind: s.kind.as_str(),
            lambda_re: s.location.re,
            lambda_im: s.location.im,
            decay_exponent: s.decay_exponent,
        })
        .collect();
    emit(out, &Doc { header: header("singularities", &p), rows: &rows }, &rows)
}

pub struct ExpandOpts {
    pub f: PathBuf,
    pub nbands: usize,
    pub t_points: usize,
    pub form: ExpansionForm,
    pub linear: bool,
    pub group: Option<Vec<usize>>,
    pub no_group: bool,
    pub jmin: i32,
    pub jmax: i32,
}

#[derive(serde::Deserialize)]
struct FRecord {
    x: f64,
    f_re: f64,
    f_im: f64,
}

fn read_function(path: &PathBuf, interpolation: Interpolation) -> Result<SampledFunction> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "f_re", "f_im"] {
        return Err(usage(format!("{}: header must be x,f_re,f_im", path.display())));
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for rec in reader.deserialize() {
        let r: FRecord = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        xs.push(r.x);
        vs.push(C::new(r.f_re, r.f_im));
    }
    Ok(SampledFunction::from_points(&xs, vs, interpolation)?)
}

#[derive(Serialize)]
struct ExpandRow {
    x: f64,
    f_re: f64,
    f_im: f64,
    fhat_re: f64,
    fhat_im: f64,
}

#[derive(Serialize)]
struct RefinementDoc {
    bands: Vec<usize>,
    epsilons: Vec<f64>,
    changes: Vec<f64>,
    converged: bool,
}

#[derive(Serialize)]
struct ExpandDoc<'a> {
    #[serde(flatten)]
    header: Header,
    form: &'static str,
    nbands: usize,
    t_points: usize,
    relative_l2_error: f64,
    refinement: Option<RefinementDoc>,
    rows: &'a [ExpandRow],
}

pub fn expand(coupling: &Coupling, o: &ExpandOpts, out: &OutputOpts) -> Result<()> {
    let p = coupling.params()?;
    if o.nbands == 0 || o.t_points < 2 || o.jmin < 1 || o.jmax < o.jmin + 2 {
        return Err(usage("need --nbands >= 1, --t-points >= 2 and 1 <= jmin <= jmax - 2"));
    }
    let interpolation = if o.linear { Interpolation::Linear } else { Interpolation::Cubic };
    let f = read_function(&o.f, interpolation)?;
    let epsilons: Vec<f64> = (o.jmin..=o.jmax).map(|j| 0.5f64.powi(j)).collect();
    let bands: Vec<usize> = match (&o.group, o.no_group) {
        (Some(b), _) => b.clone(),
        (None, true) => Vec::new(),
        (None, false) => {
            let mut b: Vec<usize> = ess_points(&p, o.nbands)?
                .iter()
                .flat_map(|e| [e.n, e.n + 1])
                .filter(|&n| n <= o.nbands)
                .collect();
            b.sort_unstable();
            b.dedup();
            b
        }
    };
    let grouping = if bands.is_empty() { Grouping::None } else { Grouping::EssGrouped { bands, epsilons } };
    let (name, r) = match o.form {
        ExpansionForm::T => ("t", reconstruct(&p, &f, o.nbands, o.t_points, &grouping)?),
        ExpansionForm::Lambda => ("lambda", reconstruct_lambda_form(&p, &f, o.nbands, o.t_points, &grouping)?),
    };
    let rows: Vec<ExpandRow> = r
        .x
        .iter()
        .zip(&r.values)
        .map(|(&x, v)| {
            let fx = f.eval(x);
            ExpandRow { x, f_re: fx.re, f_im: fx.im, fhat_re: v.re, fhat_im: v.im }
        })
        .collect();
    let refinement = r.refinement.map(|g| RefinementDoc { bands: g.bands, epsilons: g.epsilons, changes: g.changes, converged: g.converged });
    let doc = ExpandDoc {
        header: header("expand", &p),
        form: name,
        nbands: o.nbands,
        t_points: o.t_points,
        relative_l2_error: r.relative_l2_error,
        refinement,
        rows: &rows,
    };
    emit(out, &doc, &rows)
}

#[derive(Serialize)]
struct ScanRow {
    #[serde(rename = "V")]
    v: f64,
    c: f64,
    real_periodic_count: usize,
    real_band_count: usize,
    /// `1` where λ_n(0) is real, for n = 1..=nmax
    periodic_real: String,
    /// `1` where band n has a real point
    band_real: String,
}

#[derive(Serialize)]
struct ScanDoc<'a> {
    command: &'static str,
    nmax: usize,
    monotone_loss: bool,
    rows: &'a [ScanRow],
}

fn mask(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn scan(vmin: f64, vmax: f64, nv: usize, nmax: usize, out: &OutputOpts) -> Result<()> {
    if nv == 0 || nmax == 0 || !(vmax >= vmin) {
        return Err(usage("need --nv >= 1, --nmax >= 1 and --vmax >= --vmin"));
    }
    let grid: Vec<f64> = (0..nv)
        .map(|i| if nv == 1 { vmin } else { vmin + (vmax - vmin) * i as f64 / (nv - 1) as f64 })
        .collect();
    let table = reality_scan(&grid, nmax)?;
    let rows: Vec<ScanRow> = table
        .iter()
        .map(|r| ScanRow {
            v: r.v,
            c: r.c,
            real_periodic_count: r.real_periodic_count,
            real_band_count: r.real_band_count,
            periodic_real: mask(&r.periodic_real),
            band_real: mask(&r.band_has_real),
        })
        .collect();
    let doc = ScanDoc { command: "scan", nmax, monotone_loss: reality_loss_is_monotone(&table), rows: &rows };
    emit(out, &doc, &rows)
}
