//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! numbers underneath. Exits non-zero when a check fails that is not listed
//! in `KNOWN_UNATTAINABLE`.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use hillspec::bloch_bands::{bloch_point, DoublePoint};
use hillspec::boundary_spectra::{ad_imag_asymptote, pd_pn_splitting};
use hillspec::expansion::{band_refinement, default_epsilons, Interpolation};
use hillspec::matrix_oracle::{converged, truncation_order};
use hillspec::{
    bloch_eigenvalues, classified_spectrum, count_in_regions, detect_singularities, discriminant,
    discriminant_second_derivative, disk_cover_check, eigen_pair, find_critical, find_double_point,
    periodic_spectrum, reconstruct, reconstruct_lambda_form, Complex64 as C, CountKind, EigenClass, Grouping,
    PotentialParams, SampledFunction, SingularityKind, SpectrumKind,
};

/// The flat 1e−6 Dirichlet/Neumann margin; the true separation of the pair
/// near (2n)² decays like c^{2n} and drops below it inside every window.
const KNOWN_UNATTAINABLE: &[&str] = &["dn_margin"];

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn bump() -> SampledFunction {
    SampledFunction::sample(|x| C::new((-x * x).exp(), 0.0), -6.0, 6.0, 241, Interpolation::Cubic).unwrap()
}

fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
}

fn criterion_1(v2: &mut Option<f64>) -> Vec<Check> {
    let start = Instant::now();
    let cp = find_critical(2);
    let secs = start.elapsed().as_secs_f64();
    let Ok(cp) = cp else {
        return vec![check("v2", false, format!("find_critical(2) failed: {:?}", cp.err()))];
    };
    *v2 = Some(cp.v_k);
    vec![
        check("v2_bracket", (0.8884370025..=0.8884370117).contains(&cp.v_k), format!("V2 = {:.13}", cp.v_k)),
        check("v2_residual", cp.residual < 1e-8, format!("|(F-2, F')| = {:.2e} at lambda* = {:.10}, c2 = {:.10}", cp.residual, cp.lambda_star, cp.c_k)),
        check("v2_runtime", secs < 60.0, format!("{secs:.1} s")),
    ]
}

fn criterion_2() -> Vec<Check> {
    let p = params(0.0);
    let f_err = (0..=200)
        .map(|i| {
            let l = 0.5 * i as f64;
            (discriminant(&p, C::new(l, 0.0)).unwrap().0 - 2.0 * (PI * l.sqrt()).cos()).norm()
        })
        .fold(0.0, f64::max);
    let mut bloch_err: f64 = 0.0;
    for t in [0.0, 0.25, 0.5, 1.0] {
        let eigs = bloch_eigenvalues(&p, t, truncation_order(0.0, 24)).unwrap();
        for n in -10i32..=10 {
            let exact = (2.0 * n as f64 + t).powi(2);
            let d = eigs.iter().map(|z| (z - exact).norm()).fold(f64::INFINITY, f64::min);
            bloch_err = bloch_err.max(d);
        }
    }
    vec![
        check("free_discriminant", f_err < 1e-9, format!("max |F - 2cos(pi sqrt(lambda))| = {f_err:.2e} over 201 points")),
        check("free_bloch", bloch_err < 1e-9, format!("max |lambda - (2n+t)^2| = {bloch_err:.2e}")),
    ]
}

fn criterion_3() -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0, 2.0, 4.0] {
        let p = params(c);
        for t in [0.0, 0.3, 1.0] {
            let target = 2.0 * (PI * t).cos();
            for z in bloch_window(&p, t, 12).into_iter().take(12) {
                worst = worst.max((discriminant(&p, z).unwrap().0 - target).norm());
            }
        }
    }
    vec![check("matrix_shooting", worst < 1e-7, format!("max |F(lambda) - 2cos(pi t)| = {worst:.2e}"))]
}

fn criterion_4() -> Vec<Check> {
    let mut out = Vec::new();
    let mut violators = 0;
    let mut total = 0;
    for c in [1.0, 2.0, 4.0] {
        let p = params(c);
        for t in [0.0, 0.3, 0.5, 1.0] {
            let m = truncation_order(c, 24);
            let eigs = converged(&bloch_eigenvalues(&p, t, m).unwrap(), m);
            total += eigs.len();
            violators += disk_cover_check(&p, t, &eigs).violators.len();
        }
    }
    out.push(check("disks", violators == 0, format!("{violators} of {total} converged eigenvalues outside every disk")));
    let p = params(2.0);
    for (name, t, kind) in [("counts_periodic", 0.0, CountKind::Periodic), ("counts_antiperiodic", 1.0, CountKind::Antiperiodic)] {
        let m = truncation_order(2.0, 24);
        let eigs = converged(&bloch_eigenvalues(&p, t, m).unwrap(), m);
        match count_in_regions(&p, &eigs, kind) {
            Ok(r) => out.push(check(
                name,
                r.rectangle == r.rectangle_expected && r.disks.iter().all(|d| d.1 == 2),
                format!("rectangle {}/{}, {} far disks with 2 each", r.rectangle, r.rectangle_expected, r.disks.len()),
            )),
            Err(e) => out.push(check(name, false, e.to_string())),
        }
    }
    out
}

/// Real solution of `F(λ) = F★ + u` on one side of the critical point,
/// by safeguarded Newton from the quadratic model.
fn level_point(p: &PotentialParams, star: f64, f2: f64, u: f64, side: f64) -> Option<f64> {
    let reach = (2.0 * u / f2).sqrt();
    let (mut lo, mut hi) = if side < 0.0 { (star - 4.0 * reach, star) } else { (star, star + 4.0 * reach) };
    let fs = discriminant(p, C::new(star, 0.0)).ok()?.0.re;
    let g = |x: f64| discriminant(p, C::new(x, 0.0)).map(|(f, fp)| (f.re - fs - u, fp.re));
    let g_lo = g(lo).ok()?.0;
    if g_lo.signum() == g(hi).ok()?.0.signum() {
        return None;
    }
    let mut x = star + side * reach;
    for _ in 0..100 {
        let (v, dv) = g(x).ok()?;
        if v.signum() == g_lo.signum() { lo = x } else { hi = x }
        let next = x - v / dv;
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if (next - x).abs() < 1e-15 * x.abs() {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// End of the real segment on one side of `λ★`. Along the real segment
/// `F − F★ = u` with `λ − λ★` a power series in `√u`; three levels halving
/// `√u` and Richardson remove the two leading terms. The first level is
/// matched against the numbered band at the corresponding `t`.
fn segment_end(p: &PotentialParams, dp: &DoublePoint, band: usize, side: f64) -> Result<f64, String> {
    let f2 = dp.f_second.re.abs();
    let u0 = 1e-6;
    let vals: Vec<f64> = (0..3)
        .map(|i| level_point(p, dp.lambda, f2, u0 / f64::from(1 << (2 * i)), side))
        .collect::<Option<_>>()
        .ok_or("no real level point")?;
    // F + 2 at the level, from 1 − t_k without cancellation
    let plus = 4.0 * (0.5 * PI * dp.one_minus_t).sin().powi(2) + u0;
    let t = 1.0 - 2.0 / PI * (plus / 4.0).sqrt().asin();
    let on_band = bloch_point(p, band, t).map_err(|e| e.to_string())?;
    if (on_band.lambda - vals[0]).norm() > 1e-7 {
        return Err(format!("band {band} at t = {t} is {}, level point {}", on_band.lambda, vals[0]));
    }
    let r1a = 2.0 * vals[1] - vals[0];
    let r1b = 2.0 * vals[2] - vals[1];
    Ok((4.0 * r1b - r1a) / 3.0)
}

fn criterion_5() -> Vec<Check> {
    let p = params(2.5);
    let mut out = Vec::new();
    for k in p.n3 + 1..=p.n3 + 4 {
        let name = "double_point";
        let dp = match find_double_point(&p, k) {
            Ok(d) => d,
            Err(e) => {
                out.push(check(name, false, format!("k = {k}: {e}")));
                continue;
            }
        };
        let (_, fp) = discriminant(&p, C::new(dp.lambda, 0.0)).unwrap();
        let f2 = discriminant_second_derivative(&p, C::new(dp.lambda, 0.0)).unwrap();
        // roots of F' strictly inside I_k, counted by sign changes; the
        // ends are near-double periodic eigenvalues where F' is also ~0
        let per = periodic_spectrum(&p, 2 * k).unwrap();
        let (lo, hi) = (per[2 * k - 2].re, per[2 * k - 1].re);
        let fps: Vec<f64> = (1..400)
            .map(|i| discriminant(&p, C::new(lo + (hi - lo) * i as f64 / 400.0, 0.0)).unwrap().1.re)
            .collect();
        let roots = fps.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        // t_k ∈ (0, 1) and F ∈ (−2, 2) both read off 1 − t_k, which the
        // solver keeps apart from t_k
        let plus = 4.0 * (0.5 * PI * dp.one_minus_t).sin().powi(2);
        let interior = dp.t > 0.0 && dp.one_minus_t > 0.0 && dp.one_minus_t < 1.0;
        let ok = interior && fp.norm() < 1e-8 && f2.norm() > 1e-6 && roots == 1;
        out.push(check(
            name,
            ok,
            format!(
                "k = {k}: 1 - t_k = {:.3e}, lambda = {:.10}, |F'| = {:.1e}, F + 2 = {plus:.3e}, |F''| = {:.3e}, roots of F' in I_k: {roots}",
                dp.one_minus_t,
                dp.lambda,
                fp.norm(),
                f2.norm()
            ),
        ));
        match (segment_end(&p, &dp, 2 * k - 1, -1.0), segment_end(&p, &dp, 2 * k, 1.0)) {
            (Ok(a), Ok(b)) => {
                let gap = (a - dp.lambda).abs().max((b - dp.lambda).abs());
                out.push(check("segments_abut", gap < 1e-7, format!("k = {k}: segment ends {a:.10}, {b:.10}; max distance to lambda(t_k) {gap:.1e}")));
            }
            (a, b) => {
                let why = [a.err(), b.err()].into_iter().flatten().collect::<Vec<_>>().join("; ");
                out.push(check("segments_abut", false, format!("k = {k}: {why}")));
            }
        }
    }
    out
}

fn criterion_6() -> Vec<Check> {
    let p = params(0.1);
    let mut out = Vec::new();
    let expected = ["PN", "PN", "PD", "PD", "PN", "PN", "PD", "PD", "PN"];
    match classified_spectrum(&p, SpectrumKind::Periodic, 9) {
        Ok(v) => {
            let got: Vec<&str> = v.iter().map(|e| e.class.as_str()).collect();
            out.push(check("pattern", got == expected, got.join(",")));
        }
        Err(e) => out.push(check("pattern", false, e.to_string())),
    }
    match classified_spectrum(&p, SpectrumKind::Antiperiodic, 10) {
        Ok(v) => {
            let ad: Vec<C> = v.iter().filter(|e| e.class == EigenClass::AD).map(|e| e.lambda).collect();
            let an: Vec<C> = v.iter().filter(|e| e.class == EigenClass::AN).map(|e| e.lambda).collect();
            let worst = ad
                .iter()
                .map(|z| an.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            out.push(check("ad_an_conjugate", ad.len() == an.len() && worst < 1e-8, format!("{} pairs, max |conj(AD) - AN| = {worst:.1e}", ad.len())));
        }
        Err(e) => out.push(check("ad_an_conjugate", false, e.to_string())),
    }
    out
}

fn criterion_7() -> Vec<Check> {
    let c: f64 = 0.05;
    let mut out = Vec::new();
    match pd_pn_splitting(&params(c), 2) {
        Ok((measured, _)) => {
            let ratio = measured / (-c.powi(4) / 1152.0);
            out.push(check("pd_pn_ratio", (0.98..=1.02).contains(&ratio), format!("measured {measured:.6e}, ratio {ratio:.6}")));
        }
        Err(e) => out.push(check("pd_pn_ratio", false, e.to_string())),
    }
    for n in [1usize, 2] {
        let want = (2 * n - 1) as f64;
        match ad_imag_asymptote(&params(c), n) {
            Ok((im, exp)) => out.push(check(
                "ad_exponent",
                (exp - want).abs() <= 0.1 * want,
                format!("n = {n}: Im lambda_AD = {im:.6e}, fitted exponent {exp:.4} (want {want})"),
            )),
            Err(e) => out.push(check("ad_exponent", false, e.to_string())),
        }
    }
    out
}

fn criterion_8(v2: Option<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    let p = PotentialParams::from_v(0.8).unwrap();
    let reports = detect_singularities(&p, 12).unwrap();
    let ess = reports.iter().filter(|r| r.kind == SingularityKind::Ess).count();
    let interior: Vec<_> = reports
        .iter()
        .filter(|r| r.kind == SingularityKind::SpectralSingularity && r.t0 > 0.0 && r.t0 < 1.0)
        .collect();
    out.push(check(
        "v08_taxonomy",
        ess == 0 && interior.len() >= 3,
        format!("V = 0.8: {ess} ESS, {} interior spectral singularities at t0 = {:?}", interior.len(), interior.iter().map(|r| format!("{:.6}", r.t0)).collect::<Vec<_>>()),
    ));

    match v2 {
        Some(v2) => {
            let p2 = PotentialParams::from_v(v2).unwrap();
            let reports = detect_singularities(&p2, 12).unwrap();
            let ess: Vec<_> = reports.iter().filter(|r| r.kind == SingularityKind::Ess).collect();
            let per = periodic_spectrum(&p2, 2).unwrap();
            let ok = ess.len() == 1 && ess[0].n == 1 && ess[0].t0 == 0.0 && per.iter().all(|z| (ess[0].location - z).norm() < 1e-6);
            let at = ess.first().map(|r| format!("{:.10}", r.location.re)).unwrap_or_default();
            out.push(check("v2_unique_ess", ok, format!("V2: {} ESS at lambda = {at}; lambda_1(0), lambda_2(0) = {:.10}, {:.10}", ess.len(), per[0].re, per[1].re)));
        }
        None => out.push(check("v2_unique_ess", false, "V2 unavailable".into())),
    }

    // |d| along band 1 towards its interior double point at V = 0.8
    match interior.first() {
        Some(r) => {
            let m = truncation_order(p.c, 8) + 8;
            let ds: Vec<f64> = (2..=8)
                .filter_map(|j| eigen_pair(&p, r.n, r.t0 - 10f64.powi(-j), m).ok().map(|e| e.d.norm()))
                .collect();
            let decreasing = ds.windows(2).all(|w| w[1] < w[0]);
            let last = ds.last().copied().unwrap_or(f64::NAN);
            out.push(check("d_vanishes", decreasing && last < 1e-3, format!("band {} at t0 = {:.8}: |d| = {}", r.n, r.t0, ds.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", "))));
        }
        None => out.push(check("d_vanishes", false, "no interior double point".into())),
    }
    out
}

fn criterion_9(v2: Option<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    let f = bump();
    match reconstruct(&params(0.0), &f, 24, 256, &Grouping::None) {
        Ok(r) => out.push(check("free_error", r.relative_l2_error < 1e-3, format!("c = 0: relative L2 error {:.2e}", r.relative_l2_error))),
        Err(e) => out.push(check("free_error", false, e.to_string())),
    }
    let p = PotentialParams::from_v(0.8).unwrap();
    let t_form = reconstruct(&p, &f, 24, 256, &Grouping::None);
    match &t_form {
        Ok(r) => out.push(check("v08_error", r.relative_l2_error < 1e-2, format!("V = 0.8: relative L2 error {:.2e}", r.relative_l2_error))),
        Err(e) => out.push(check("v08_error", false, e.to_string())),
    }
    match (&t_form, reconstruct_lambda_form(&p, &f, 24, 128, &Grouping::None)) {
        (Ok(a), Ok(b)) => {
            let d = max_diff(&a.values, &b.values);
            out.push(check("t_vs_lambda", d < 1e-3, format!("V = 0.8, 24 bands: max pointwise difference {d:.2e}")));
        }
        (_, Err(e)) => out.push(check("t_vs_lambda", false, e.to_string())),
        (Err(_), _) => out.push(check("t_vs_lambda", false, "t-form failed".into())),
    }
    let Some(v2) = v2 else {
        out.push(check("v2_grouping", false, "V2 unavailable".into()));
        return out;
    };
    let p2 = PotentialParams::from_v(v2).unwrap();
    let eps = default_epsilons();
    let grouped = band_refinement(&p2, &f, &[1, 2], &eps, 256).unwrap();
    let single = band_refinement(&p2, &f, &[1], &eps, 256).unwrap();
    let last = |r: &hillspec::expansion::Refinement| r.changes.last().copied().unwrap_or(f64::NAN);
    out.push(check(
        "v2_grouping",
        grouped.converged && last(&grouped) < 1e-4 && !single.converged && !(last(&single) < 1e-4),
        format!("V2: grouped {{1,2}} last change {:.2e}, band 1 alone {:.2e}", last(&grouped), last(&single)),
    ));
    out
}

fn criterion_10() -> Vec<Check> {
    let start = Instant::now();
    let mut out = Vec::new();
    let w = wronskian_grid(1000).iter().map(|&(l, c)| wronskian_error(&params(c), l)).fold(0.0, f64::max);
    out.push(check("wronskian", w < 1e-10, format!("1000 samples, max scaled |W - 1| = {w:.2e}")));

    let mut conj: f64 = 0.0;
    for c in [0.5, 1.0, 2.0, 4.0] {
        for t in [0.0, 0.3, 1.0] {
            conj = conj.max(conjugation_defect(&bloch_window(&params(c), t, 16)));
        }
    }
    out.push(check("conjugation", conj < 1e-8, format!("max distance of conj(lambda) to the spectrum {conj:.2e}")));

    let margins: Vec<(f64, f64)> = [0.1, 0.5, 1.0, 2.0, 4.0].iter().map(|&c| (c, dn_min_distance(&params(c), 10))).collect();
    out.push(check(
        "dn_margin",
        margins.iter().all(|m| m.1 > 1e-6),
        format!("min |D - N| over the 10 lowest of each: {}", margins.iter().map(|(c, d)| format!("c={c}: {d:.1e}")).collect::<Vec<_>>().join(", ")),
    ));

    let union = [0.1, 0.5, 1.0, 2.0, 4.0].iter().map(|&c| union_identity_defect(&params(c), 12)).fold(0.0, f64::max);
    out.push(check("union_identity", union < 1e-7, format!("max matching distance {union:.2e}")));

    let (mut bio, mut idem): (f64, f64) = (0.0, 0.0);
    for c in [0.5, 1.0, 2.0] {
        for t in [0.25, 0.5, 0.75] {
            let p = params(c);
            bio = bio.max(biorthogonality_defect(&p, t, 8));
            for n in 1..=8 {
                idem = idem.max(idempotence_defect(&p, n, t, n as u64));
            }
        }
    }
    out.push(check("biorthogonality", bio < 1e-7, format!("max |(Psi_m, Psi*_n)| = {bio:.2e}")));
    out.push(check("idempotence", idem < 1e-9, format!("max |P(Pv) - Pv| = {idem:.2e}")));
    let secs = start.elapsed().as_secs_f64();
    out.push(check("suite_runtime", secs < 600.0, format!("{secs:.1} s")));
    out
}

fn main() {
    let total = Instant::now();
    let mut v2 = None;
    let mut unexpected = 0;
    for n in 1..=10 {
        let start = Instant::now();
        let checks = match n {
            1 => criterion_1(&mut v2),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(v2),
            9 => criterion_9(v2),
            _ => criterion_10(),
        };
        let pass = checks.iter().all(|c| c.pass);
        println!("criterion {n:>2}: {} ({:.1} s)", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
        for c in &checks {
            let known = !c.pass && KNOWN_UNATTAINABLE.contains(&c.name);
            let tag = if c.pass { "ok" } else if known { "FAIL (known)" } else { "FAIL" };
            println!("    {:<20} {tag:<12} {}", c.name, c.detail);
            if !c.pass && !known {
                unexpected += 1;
            }
        }
    }
    println!("acceptance finished in {:.1} s; {unexpected} unexpected failure(s)", total.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
