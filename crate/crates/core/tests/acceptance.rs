//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//! Tolerances and frozen constants are pinned below.

use nodalsphere::covariance::{
    delta_matrix, half_degree, omega_closed_form, omega_from_blocks, scaled_entries, sigma_blocks, ConditionalCovariance,
    PSD_TOLERANCE,
};
use nodalsphere::field::{sample_indexed, GridSpec, SynthesisPlan};
use nodalsphere::harness::{expected_length, fit_log_slope, moments};
use nodalsphere::kacrice::{
    berry_f, expected_norm_product, expansion_diagnostic, half_line_integral, k_exact, kernel_samples, BerryConfig,
    KacRiceConfig, KernelSamples, KeyCoefficients,
};
use nodalsphere::legendre::{assoc_legendre_row, energy, legendre_triplet};
use nodalsphere::linstat::{second_moment_from, variance_linstat_from, w0_model, w_transform, LinstatConfig, ZonalProfile};
use nodalsphere::nodal::{extract_nodal, weighted_length};
use nodalsphere::TestFunction;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

const SEED: u64 = 20240601;

// criterion 1
const C1_DEGREE: u32 = 20;
const C1_SAMPLES: usize = 2000;
const C1_PPW: f64 = 12.0;
const C1_REL_TOL: f64 = 0.015;
const C1_SECONDS: f64 = 300.0;
// criterion 2
const LADDER: [u32; 6] = [25, 50, 100, 200, 400, 800];
const C2_SLOPE: (f64, f64) = (1.93, 2.13);
const C2_SECONDS: f64 = 600.0;
// criterion 3
const C3_SAMPLES: usize = 5000;
const C3_PPW: f64 = 12.0;
const C3_SIGMAS: f64 = 3.0;
// criterion 4: envelope constants frozen after the first run
const C4_PSI_MIN: f64 = 15.0;
const C4_POINTS: usize = 2000;
const C4_FROZEN: f64 = 0.60;
const C4_FROZEN_SIGN_CORRECTED: f64 = 0.16;
const C4_STABILITY: f64 = 1.2;
// criterion 5
const C5_IDENTITY_TOL: f64 = 1e-8;
const C5_INTEGRAL_TOL: f64 = 1e-10;
// criterion 6
const C6_TARGET: f64 = 65.0 / 64.0;
const C6_REL_TOL: f64 = 0.07;
const C6_SINE_TOL: f64 = 1e-10;
const C6_W0_TOL: f64 = 1e-6;
// criterion 7: bound constants frozen after a calibration run
const C7_A: f64 = 0.14;
const C7_B: f64 = 0.10;
const C7_DEGREES: [u32; 5] = [10, 20, 50, 100, 200];
const C7_RADII: [f64; 3] = [0.3, PI / 4.0, PI / 2.0];
// criterion 8
const C8_SECONDS: f64 = 120.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(no: usize, title: &str, o: &Outcome) {
    println!("criterion {no} {}: {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn err(e: impl std::fmt::Display) -> Outcome {
    Outcome { pass: false, detail: format!("error: {e}") }
}

fn lengths(n: u32, samples: usize, ppw: f64) -> nodalsphere::Result<Vec<f64>> {
    let plan = SynthesisPlan::new(n, GridSpec::for_degree(n, ppw)?)?;
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let lines = extract_nodal(&plan.synthesize(&sample_indexed(n, SEED, k)?)?)?;
            Ok(lines.total_length)
        })
        .collect()
}

fn criterion1() -> Outcome {
    let t = Instant::now();
    let z = match lengths(C1_DEGREE, C1_SAMPLES, C1_PPW) {
        Ok(z) => z,
        Err(e) => return err(e),
    };
    let m = moments(&z).unwrap();
    let target = expected_length(C1_DEGREE);
    let rel = (m.mean - target).abs() / target;
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: rel <= C1_REL_TOL && secs < C1_SECONDS,
        detail: format!(
            "mean {:.4} ± {:.4} vs √2·π·√420 = {target:.4}, relative error {:.3}% (limit {}%), {secs:.1} s",
            m.mean,
            m.se_mean,
            100.0 * rel,
            100.0 * C1_REL_TOL
        ),
    }
}

fn criterion2(samples: &[KernelSamples], secs: f64) -> Outcome {
    let mut pts = Vec::new();
    for ks in samples {
        match ks.variance() {
            Ok(v) => pts.push((ks.n as f64, v.variance)),
            Err(e) => return err(e),
        }
    }
    let fit = fit_log_slope(&pts).unwrap();
    let vals: Vec<String> = pts.iter().map(|p| format!("{:.4}", p.1)).collect();
    Outcome {
        pass: fit.slope >= C2_SLOPE.0 && fit.slope <= C2_SLOPE.1 && secs < C2_SECONDS,
        detail: format!(
            "variances [{}], slope {:.4} ± {:.4}, required [{}, {}], {secs:.1} s",
            vals.join(", "),
            fit.slope,
            fit.stderr,
            C2_SLOPE.0,
            C2_SLOPE.1
        ),
    }
}

fn criterion3() -> Outcome {
    let n = C1_DEGREE;
    let pred = match kernel_samples(n, &KacRiceConfig::default()).and_then(|k| k.variance()) {
        Ok(v) => v.variance,
        Err(e) => return err(e),
    };
    let z = match lengths(n, C3_SAMPLES, C3_PPW) {
        Ok(z) => z,
        Err(e) => return err(e),
    };
    let m = moments(&z).unwrap();
    let dev = (m.var - pred).abs();
    Outcome {
        pass: dev <= C3_SIGMAS * m.se_var,
        detail: format!(
            "n={n}, {} samples at {C3_PPW} points per wavelength: sample variance {:.4} ± {:.4}, variance_exact {pred:.4}, |diff| = {:.2} se",
            C3_SAMPLES,
            m.var,
            m.se_var,
            dev / m.se_var
        ),
    }
}

fn criterion4() -> Outcome {
    let variants = [("stated", KeyCoefficients::STATED), ("sign-corrected", KeyCoefficients::SIGN_CORRECTED)];
    let mut stated = Vec::new();
    let mut corrected = Vec::new();
    for n in [100u32, 200, 500] {
        match expansion_diagnostic(n, C4_PSI_MIN, C4_POINTS, &variants, &BerryConfig::default()) {
            Ok(d) => {
                stated.push((n, d.variants[0].1));
                corrected.push((n, d.variants[1].1));
            }
            Err(e) => return err(e),
        }
    }
    let stable = |v: &[(u32, f64)], c: f64| v.iter().all(|&(_, r)| r <= c * C4_STABILITY && r >= c / C4_STABILITY);
    let fmt = |v: &[(u32, f64)]| v.iter().map(|(n, r)| format!("n={n}: {r:.3}")).collect::<Vec<_>>().join(", ");
    let at200 = stated[1].1;
    Outcome {
        pass: at200 <= C4_FROZEN && stable(&stated, C4_FROZEN),
        detail: format!(
            "stated coefficients max ratio {} (frozen {C4_FROZEN}, stability ×{C4_STABILITY}); \
             diagnostic with sign-corrected coefficients {} (frozen {C4_FROZEN_SIGN_CORRECTED}, {})",
            fmt(&stated),
            fmt(&corrected),
            if stable(&corrected, C4_FROZEN_SIGN_CORRECTED) { "stable" } else { "unstable" }
        ),
    }
}

fn criterion5() -> Outcome {
    let id = ConditionalCovariance::identity();
    let v = match expected_norm_product(&id) {
        Ok(v) => v.value,
        Err(e) => return err(e),
    };
    let id_err = (v - PI / 2.0).abs();
    let deltas = [id, ConditionalCovariance::from_abc(0.3, -0.2, 0.1), ConditionalCovariance::from_abc(-0.45, 0.05, -0.3)];
    let f00 = deltas.iter().all(|d| berry_f(0.0, 0.0, d).unwrap() == 1.0);
    let cfg = BerryConfig::default();
    let integrals: [(fn(f64) -> f64, f64); 6] = [
        (|t| 1.0 / (t.sqrt() * (1.0 + t)), PI),
        (|t| 1.0 / (t.sqrt() * (1.0 + t).powi(2)), PI / 2.0),
        (|t| t.sqrt() / (1.0 + t).powi(2), PI / 2.0),
        (|t| t.powf(1.5) / (1.0 + t).powi(3), 3.0 * PI / 8.0),
        (|t| t.sqrt() / (1.0 + t).powi(3), PI / 8.0),
        (|t| 1.0 / (t.sqrt() * (1.0 + t).powi(3)), 3.0 * PI / 8.0),
    ];
    let worst = integrals.iter().map(|(f, want)| (half_line_integral(f, &cfg) - want).abs()).fold(0.0, f64::max);
    Outcome {
        pass: id_err <= C5_IDENTITY_TOL && f00 && worst <= C5_INTEGRAL_TOL,
        detail: format!(
            "|E‖U‖‖V‖(I) - π/2| = {id_err:.2e} (limit {C5_IDENTITY_TOL:e}); f(0,0) = 1 exactly: {f00}; \
             six standard integrals worst error {worst:.2e} (limit {C5_INTEGRAL_TOL:e})"
        ),
    }
}

fn criterion6(samples: &[KernelSamples]) -> Outcome {
    let cfg = LinstatConfig::default();
    let hemi = TestFunction::hemisphere([0.0, 0.0, 1.0]).unwrap();
    let mut pts = Vec::new();
    for ks in samples {
        match variance_linstat_from(ks, &hemi, &cfg) {
            Ok(v) => pts.push((ks.n as f64, v.variance)),
            Err(e) => return err(e),
        }
    }
    let slope = fit_log_slope(&pts).unwrap().slope;
    let slope_ok = (slope - C6_TARGET).abs() <= C6_REL_TOL * C6_TARGET;

    let w1 = w_transform(&TestFunction::constant(1.0), 256).unwrap();
    let sine_err = w1.angles.iter().zip(&w1.w).map(|(d, w)| (w - d.sin()).abs()).fold(0.0, f64::max);

    let funcs = [
        ("cap", TestFunction::cap([0.0, 0.6, 0.8], 0.7).unwrap()),
        ("zonal bump", TestFunction::zonal([0.0, 0.0, 1.0], ZonalProfile::SmoothCap { radius: 0.8, width: 0.3 }).unwrap()),
    ];
    let mut w0_err: f64 = 0.0;
    for (_, phi) in &funcs {
        match w0_model(phi, &cfg) {
            Ok(m) => {
                let target = 2.0 * PI * phi.l2_norm_sq;
                w0_err = w0_err.max((m.w0(0.0) - target).abs() / target);
            }
            Err(e) => return err(e),
        }
    }
    Outcome {
        pass: slope_ok && sine_err <= C6_SINE_TOL && w0_err <= C6_W0_TOL,
        detail: format!(
            "hemisphere variance slope {slope:.4} vs 65/64 = {C6_TARGET:.4} (limit {:.0}%): {}; \
             max |W¹ - sin| = {sine_err:.1e}: {}; max relative |W₀(0) - 2π‖φ‖²| over cap and zonal bump = {w0_err:.1e}: {}",
            100.0 * C6_REL_TOL,
            if slope_ok { "ok" } else { "out of range" },
            if sine_err <= C6_SINE_TOL { "ok" } else { "too large" },
            if w0_err <= C6_W0_TOL { "ok" } else { "too large" },
        ),
    }
}

fn criterion7(ladder: &[KernelSamples]) -> Outcome {
    let cfg = LinstatConfig::default();
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for &n in &C7_DEGREES {
        let owned;
        let ks = match ladder.iter().find(|k| k.n == n) {
            Some(k) => k,
            None => match kernel_samples(n, &cfg.kacrice) {
                Ok(k) => {
                    owned = k;
                    &owned
                }
                Err(e) => return err(e),
            },
        };
        for &r in &C7_RADII {
            let phi = TestFunction::cap([0.0, 0.0, 1.0], r).unwrap();
            let m2 = match second_moment_from(ks, &phi, &cfg) {
                Ok(v) => v,
                Err(e) => return err(e),
            };
            let bound = C7_A * (n as f64).powi(2) * phi.l1_norm.powi(2) + C7_B * phi.sup_norm * phi.l1_norm;
            worst = worst.max(m2 / bound);
            if m2 > bound {
                violations.push(format!("n={n} r={r:.3}"));
            }
        }
    }
    Outcome {
        pass: violations.is_empty(),
        detail: format!(
            "A = {C7_A}, B = {C7_B}: largest E[(Z^φ)²]/bound = {worst:.4} over n ∈ {:?} and radii 0.3, π/4, π/2{}",
            C7_DEGREES,
            if violations.is_empty() { String::new() } else { format!("; violated at {}", violations.join(", ")) }
        ),
    }
}

fn criterion8() -> Outcome {
    let t = Instant::now();
    let mut failed = Vec::new();

    // Legendre ODE residuals
    let mut ode: f64 = 0.0;
    for n in [1u32, 10, 100, 1000, 5000] {
        for k in 0..=200 {
            let x = -1.0 + 2.0 * k as f64 / 200.0;
            let tr = legendre_triplet(n, x).unwrap();
            ode = ode.max(tr.ode_residual().abs() / energy(n).powi(2));
        }
    }
    if ode > 1e-10 {
        failed.push(format!("ODE residual {ode:.1e}"));
    }

    // entry bounds and Δ PSD
    let mut entry: f64 = 0.0;
    let mut psd: f64 = f64::INFINITY;
    for n in [2u32, 5, 20, 100, 500] {
        let m = half_degree(n);
        for k in 1..=200 {
            let psi = PI * m / 2.0 * k as f64 / 200.0;
            let e = scaled_entries(n, psi).unwrap();
            entry = entry.max(e.a.abs()).max(e.b.abs()).max(e.c.abs());
            psd = psd.min(delta_matrix(&e).unwrap().min_eigenvalue());
        }
    }
    if entry > 0.5 + PSD_TOLERANCE {
        failed.push(format!("entry bound {entry}"));
    }
    if psd < -PSD_TOLERANCE {
        failed.push(format!("Δ eigenvalue {psd}"));
    }

    // K symmetry
    let cfg = BerryConfig::default();
    let mut sym_ok = true;
    for (n, psi) in [(100u32, 20.0), (30, 3.0), (300, 150.0)] {
        let m = half_degree(n);
        let (k1, e1) = k_exact(n, psi, &cfg).unwrap();
        let (k2, e2) = k_exact(n, PI * m - psi, &cfg).unwrap();
        if (k1 - k2).abs() > 2.0 * (e1 + e2) + 8.0 * f64::EPSILON * k1.abs() {
            sym_ok = false;
        }
    }
    if !sym_ok {
        failed.push("K symmetry".into());
    }

    // Ω two ways
    let mut omega: f64 = 0.0;
    for (n, phi) in [(3u32, 1.0), (40, 0.2), (200, 0.01), (200, 2.0)] {
        let a = omega_closed_form(n, phi).unwrap();
        let b = omega_from_blocks(&sigma_blocks(n, phi).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                omega = omega.max((a[i][j] - b[i][j]).abs() / energy(n));
            }
        }
    }
    if omega > 1e-9 {
        failed.push(format!("Ω paths differ by {omega:.1e}"));
    }

    // addition theorem
    let mut add: f64 = 0.0;
    for n in [1u32, 7, 64, 500, 3000] {
        for th in [0.0, 0.01, 0.7, PI / 2.0, 2.5, PI] {
            add = add.max((assoc_legendre_row(n, th).unwrap().addition_sum() - 1.0).abs());
        }
    }
    if add > 1e-10 {
        failed.push(format!("addition theorem {add:.1e}"));
    }

    // parity of fields and nodal sets
    let mut parity: f64 = 0.0;
    let mut half: f64 = 0.0;
    for (n, k) in [(7u32, 0u64), (12, 1), (25, 2)] {
        let plan = SynthesisPlan::new(n, GridSpec::for_degree(n, 10.0).unwrap()).unwrap();
        let f = plan.synthesize(&sample_indexed(n, SEED, k).unwrap()).unwrap();
        parity = parity.max(f.parity_defect());
        let lines = extract_nodal(&f).unwrap();
        let h = TestFunction::hemisphere([0.2, -0.5, 0.8]).unwrap();
        half = half.max((weighted_length(&lines, &h) / lines.total_length - 0.5).abs());
    }
    if parity > 1e-10 {
        failed.push(format!("field parity {parity:.1e}"));
    }
    if half > 1e-9 {
        failed.push(format!("nodal set parity {half:.1e}"));
    }

    let secs = t.elapsed().as_secs_f64();
    if secs >= C8_SECONDS {
        failed.push(format!("{secs:.0} s"));
    }
    Outcome {
        pass: failed.is_empty(),
        detail: format!(
            "ODE {ode:.1e}, max |a|,|b|,|c| {entry:.6}, min eig Δ {psd:.1e}, K symmetry {}, Ω {omega:.1e}, \
             addition {add:.1e}, parity {parity:.1e}/{half:.1e}, {secs:.1} s{}",
            if sym_ok { "ok" } else { "broken" },
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    }
}

fn main() {
    // cargo passes harness flags such as --nocapture or a filter; they are ignored
    let mut results = Vec::new();

    let t = Instant::now();
    let ladder: Vec<KernelSamples> = match LADDER.iter().map(|&n| kernel_samples(n, &KacRiceConfig::default())).collect() {
        Ok(v) => v,
        Err(e) => {
            println!("kernel scan failed: {e}");
            std::process::exit(1);
        }
    };
    let ladder_secs = t.elapsed().as_secs_f64();

    let runs: [(&str, Box<dyn Fn() -> Outcome>); 8] = [
        ("expected nodal length", Box::new(criterion1)),
        ("semi-analytic variance slope", Box::new(|| criterion2(&ladder, ladder_secs))),
        ("Monte Carlo vs Kac-Rice variance", Box::new(criterion3)),
        ("two-point expansion envelope", Box::new(criterion4)),
        ("Berry integral identities", Box::new(criterion5)),
        ("linear statistics", Box::new(|| criterion6(&ladder))),
        ("second-moment bound", Box::new(|| criterion7(&ladder))),
        ("structural invariants", Box::new(criterion8)),
    ];
    for (i, (title, run)) in runs.iter().enumerate() {
        let o = run();
        report(i + 1, title, &o);
        results.push(o.pass);
    }
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
