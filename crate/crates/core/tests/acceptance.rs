//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use pfspad::estimators::{estimate_from_interarrivals, DetectionTrace};
use pfspad::hdr_pipeline::{reconstruct_flux, simulate_capture, tone_map, write_outputs, FluxImage, OutputPaths};
use pfspad::photon_mc::{run_trials, simulate_spad_count, SeedSpec, SimSensor, StartState};
use pfspad::reference_analytic::{conventional_peak_snr, estimator_slope_gap};
use pfspad::spad_analytic::{
    count_pmf_exact, count_variance, dynamic_range, expected_counts, log_flux_grid, rmse_approx, rmse_exact,
    snr_curve, snr_from_rmse, soft_saturation_flux, SensorModel,
};
use pfspad::{ConventionalConfig, Exposure, FluxLevel, QisConfig, SpadConfig};
use rand::Rng;
use rand_distr::{Distribution, Exp};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn flux(v: f64) -> FluxLevel {
    FluxLevel::new(v).unwrap()
}

fn exposure(t: f64) -> Exposure {
    Exposure::new(t).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn asymptote() -> Outcome {
    let n = expected_counts(flux(1e12), &SpadConfig::REFERENCE, exposure(5e-3));
    check((n / 33_400.0 - 1.0).abs() <= 0.01, format!("E[N](1e12) = {n:.3}, limit 33400"))
}

fn dynamic_range_ratio() -> Outcome {
    let t = exposure(5e-3);
    let spad = snr_curve(&SensorModel::SpadApprox(SpadConfig::REFERENCE), t, 1e2, 1e12, 2001).map_err(|e| e.to_string())?;
    let conv = snr_curve(&SensorModel::Conventional(ConventionalConfig::REFERENCE), t, 1e2, 1e12, 2001)
        .map_err(|e| e.to_string())?;
    let (Some(ds), Some(dc)) = (dynamic_range(&spad, 30.0), dynamic_range(&conv, 30.0)) else {
        return Err("a curve never reaches 30 dB".into());
    };
    let ratio = ds / dc;
    check(ratio >= 100.0, format!("DR spad {ds:.4e}, conventional {dc:.4e}, ratio {ratio:.4e} (>= 100)"))
}

fn exposure_effect() -> Outcome {
    let grid_5ms = log_flux_grid(1e3, 1e12, 901).map_err(|e| e.to_string())?;
    let peak = |model: &SensorModel, t: f64, lo: f64, hi: f64| {
        let c = snr_curve(model, exposure(t), lo, hi, grid_5ms.len()).unwrap();
        let (i, s) = c
            .snr_db
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        (s, c.flux_grid[i])
    };
    let spad = SensorModel::SpadApprox(SpadConfig::REFERENCE);
    let (s5, _) = peak(&spad, 5e-3, 1e3, 1e12);
    let (s05, _) = peak(&spad, 0.5e-3, 1e3, 1e12);
    let conv = SensorModel::Conventional(ConventionalConfig::REFERENCE);
    // the same 100-points-per-decade grid shifted up one decade
    let (c5, f5) = peak(&conv, 5e-3, 1e3, 1e12);
    let (c05, f05) = peak(&conv, 0.5e-3, 1e4, 1e13);
    let sup = conventional_peak_snr(&ConventionalConfig::REFERENCE);
    let ok = s05 < s5 && (c5 - c05).abs() < 1e-9 && (f05 / f5 / 10.0 - 1.0).abs() < 1e-9 && c5 <= sup;
    check(
        ok,
        format!(
            "spad peak {s5:.3} dB @5ms vs {s05:.3} dB @0.5ms; conventional peak {c5:.6} vs {c05:.6} dB at flux {f5:.4e} -> {f05:.4e} (sup {sup:.6})"
        ),
    )
}

fn jitter_degradation() -> Outcome {
    let t = exposure(5e-3);
    let base = SpadConfig {
        afterpulse_prob: 0.0,
        ..SpadConfig::REFERENCE
    };
    let dr = |sigma: f64| {
        let c = snr_curve(&SensorModel::SpadJitter(base.with_jitter(sigma)), t, 1e2, 1e12, 2001).unwrap();
        dynamic_range(&c, 30.0)
    };
    let (Some(sharp), Some(blurred)) = (dr(0.01e-9), dr(50e-9)) else {
        return Err("a jitter curve never reaches 30 dB".into());
    };
    let orders = (sharp / blurred).log10();
    check(
        (2.0..=4.0).contains(&orders),
        format!("DR {sharp:.4e} at 0.01 ns vs {blurred:.4e} at 50 ns: {orders:.3} orders"),
    )
}

fn mc_agreement() -> Outcome {
    let cfg = SpadConfig::REFERENCE.without_spurious_counts();
    let t = exposure(5e-3);
    let sensor = SimSensor::Spad {
        cfg,
        start: StartState::Stationary,
        exact_sampling: false,
    };
    let grid = [1e6, 1e7, 1e8, 1e9];
    let stats = run_trials(&sensor, t, &grid, 10_000, 2024).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut lines = Vec::new();
    for s in &stats {
        let phi = flux(s.flux);
        let mean = expected_counts(phi, &cfg, t);
        let var = count_variance(phi, &cfg, t);
        let snr = snr_from_rmse(phi, rmse_approx(phi, &cfg, t, false).rmse).unwrap();
        let z = (s.mean_count - mean) / s.count_standard_error();
        let var_rel = s.var_count / var - 1.0;
        let dsnr = s.snr_db() - snr;
        ok &= z.abs() <= 3.0 && var_rel.abs() <= 0.10 && dsnr.abs() <= 1.0;
        lines.push(format!("{:.0e}: z={z:+.2} var{var_rel:+.3} snr{dsnr:+.3}dB", s.flux));
    }
    check(ok, lines.join("; "))
}

fn exact_distribution() -> Outcome {
    let cfg = SpadConfig::REFERENCE.without_spurious_counts();
    let t = exposure(5e-3);
    let pmf = count_pmf_exact(flux(1e8), &cfg, t).map_err(|e| e.to_string())?;
    let total: f64 = pmf.probs.iter().sum();
    let trials = 100_000u64;
    let mut hist = vec![0u64; pmf.probs.len()];
    for i in 0..trials {
        let n = simulate_spad_count(flux(1e8), &cfg, t, StartState::DetectionAtZero, SeedSpec::new(6, i));
        hist[n as usize] += 1;
    }
    let tv = 0.5
        * pmf
            .probs
            .iter()
            .zip(&hist)
            .map(|(p, &h)| (p - h as f64 / trials as f64).abs())
            .sum::<f64>();
    check(
        (total - 1.0).abs() <= 1e-9 && tv <= 0.02,
        format!("sum {total:.12}, TV distance {tv:.4} over {trials} trials"),
    )
}

fn exact_vs_approx() -> Outcome {
    let cfg = SpadConfig::REFERENCE.without_spurious_counts();
    let t = exposure(5e-3);
    let grid = log_flux_grid(1e5, 1e9, 41).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, 0.0);
    for &phi in &grid {
        let exact = rmse_exact(flux(phi), &cfg, t).map_err(|e| e.to_string())?;
        let approx = rmse_approx(flux(phi), &cfg, t, false).rmse;
        let gap = (exact - approx).abs() / approx;
        if gap > worst.0 {
            worst = (gap, phi);
        }
    }
    check(worst.0 <= 0.05, format!("max relative gap {:.4} at {:.3e}", worst.0, worst.1))
}

fn variance_peak() -> Outcome {
    let cfg = SpadConfig::REFERENCE;
    let t = exposure(5e-3);
    let grid = log_flux_grid(1e3, 1e12, 10_000).map_err(|e| e.to_string())?;
    let (best, _) = grid
        .iter()
        .map(|&phi| (phi, count_variance(flux(phi), &cfg, t)))
        .fold((0.0, f64::NEG_INFINITY), |acc, (p, v)| if v > acc.1 { (p, v) } else { acc });
    let step = (grid[1] / grid[0]).ln();
    let target = 1.0 / (2.0 * cfg.quantum_efficiency * cfg.dead_time_s);
    let off = (best / target).ln().abs() / step;
    check(off <= 1.0, format!("argmax {best:.6e} vs {target:.6e}: {off:.3} grid steps"))
}

fn soft_saturation() -> Outcome {
    let spad = SpadConfig::REFERENCE;
    let t = exposure(5e-3);
    let phi_s = soft_saturation_flux(&spad, t);
    let b = rmse_approx(flux(phi_s), &spad, t, false);
    let balanced = (b.var_quantization / b.var_shot - 1.0).abs() < 1e-6;
    let hard = ConventionalConfig::REFERENCE.saturation_flux(t);
    // one sign change of (var_q - var_shot) above the hard saturation flux
    let grid = log_flux_grid(hard, 1e14, 20_001).map_err(|e| e.to_string())?;
    let sign = |phi: f64| {
        let b = rmse_approx(flux(phi), &spad, t, false);
        b.var_quantization > b.var_shot
    };
    let crossings = grid.windows(2).filter(|w| sign(w[0]) != sign(w[1])).count();
    check(
        phi_s.is_finite() && balanced && phi_s > hard && crossings == 1,
        format!("crossover {phi_s:.5e} (> hard saturation {hard:.5e}), {crossings} crossing(s) above it"),
    )
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn mle_property() -> Outcome {
    let mut rng = SeedSpec::new(10, 0).rng();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q = rng.random_range(0.1..0.9);
        let tau = rng.random_range(1e-9..1e-6);
        let true_rate = rng.random_range(0.05..20.0) / tau;
        let n = rng.random_range(2..40);
        let cfg = SpadConfig::ideal(q, tau);
        let wait = Exp::new(true_rate).unwrap();
        let gaps: Vec<f64> = (0..n).map(|_| tau + wait.sample(&mut rng)).collect();
        let total: f64 = gaps.iter().sum();
        let trace = DetectionTrace::from_gaps(&gaps, exposure(total * 1.5)).map_err(|e| e.to_string())?;
        let est = estimate_from_interarrivals(&trace, &cfg).map_err(|e| e.to_string())?.phi_hat;
        // log-likelihood of shifted-exponential gaps, in ln(phi)
        let excess: f64 = gaps.iter().map(|g| g - tau).sum();
        let loglik = |ln_phi: f64| {
            let rate = q * ln_phi.exp();
            n as f64 * rate.ln() - rate * excess
        };
        let guess = (true_rate / q).ln();
        let ln_hat = golden_section_max(loglik, guess - 12.0, guess + 12.0, 1e-11);
        worst = worst.max((ln_hat.exp() / est - 1.0).abs());
    }
    check(worst <= 1e-6, format!("max relative deviation {worst:.3e} over 200 traces"))
}

fn qis_comparison() -> Outcome {
    let t = exposure(5e-3);
    let tau = 5e-3 / 33_400.0;
    let spad = SpadConfig {
        dead_time_s: tau,
        ..SpadConfig::REFERENCE
    };
    let qis = QisConfig {
        quantum_efficiency: spad.quantum_efficiency,
        bin_width_s: tau,
        read_noise_e: 0.13,
    };
    let bins = qis.bins(t).map_err(|e| e.to_string())?;
    let mut slopes_ok = true;
    for i in 0..1000u64 {
        let n = 1 + i * (bins - 2) / 999;
        let s = estimator_slope_gap(n, &spad, &qis, t).map_err(|e| e.to_string())?;
        slopes_ok &= s.spad > s.qis;
    }
    let ds = dynamic_range(&snr_curve(&SensorModel::SpadApprox(spad), t, 1e2, 1e12, 2001).unwrap(), 30.0);
    let dq = dynamic_range(&snr_curve(&SensorModel::Qis(qis), t, 1e2, 1e12, 2001).unwrap(), 30.0);
    let (Some(ds), Some(dq)) = (ds, dq) else {
        return Err("a curve never reaches 30 dB".into());
    };
    check(
        slopes_ok && dq <= ds,
        format!("slope inequality on 1000 counts: {slopes_ok}; DR qis {dq:.4e} vs spad {ds:.4e}"),
    )
}

fn image_pipeline() -> Outcome {
    let (w, h) = (64, 64);
    let data: Vec<f64> = (0..w * h).map(|i| if i % w < w / 2 { 1e4 } else { 1e9 }).collect();
    let img = FluxImage::new(w, h, 1, data).map_err(|e| e.to_string())?;
    let t = exposure(5e-3);
    let bright = |i: usize| i % w >= w / 2;
    let patch_means = |v: &[f64]| {
        let (mut d, mut b) = (0.0, 0.0);
        for (i, x) in v.iter().enumerate() {
            if bright(i) {
                b += x;
            } else {
                d += x;
            }
        }
        let half = (w * h / 2) as f64;
        (d / half, b / half)
    };
    let spad = SimSensor::spad_capture(SpadConfig::REFERENCE, false);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    let mut means = (0.0, 0.0);
    for run in 0..2 {
        let counts = simulate_capture(&img, &spad, t, 99).map_err(|e| e.to_string())?;
        let rec = reconstruct_flux(&counts).map_err(|e| e.to_string())?;
        let toned = tone_map(&rec.flux, 1.0).map_err(|e| e.to_string())?;
        let paths = OutputPaths::from_prefix(dir.path().join(format!("run{run}")));
        write_outputs(&rec, &toned, &paths).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = [&paths.png, &paths.pfm, &paths.summary_csv]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        outputs.push(bytes);
        means = patch_means(rec.flux.data());
    }
    let identical = outputs[0] == outputs[1];
    let (dim, lit) = means;
    let spad_ok = (dim / 1e4 - 1.0).abs() <= 0.10 && (lit / 1e9 - 1.0).abs() <= 0.10;

    let conv = SimSensor::Conventional(ConventionalConfig::REFERENCE);
    let rec = reconstruct_flux(&simulate_capture(&img, &conv, t, 99).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let bright_flagged = (0..w * h).filter(|&i| bright(i)).all(|i| rec.saturated[i]);
    let dim_flagged = (0..w * h).filter(|&i| !bright(i) && rec.saturated[i]).count();
    check(
        spad_ok && bright_flagged && dim_flagged == 0 && identical,
        format!(
            "spad patch means {dim:.4e} / {lit:.4e}; conventional bright patch flagged: {bright_flagged}, dim flagged {dim_flagged}; identical outputs: {identical}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("asymptote", asymptote),
        ("dynamic range vs conventional", dynamic_range_ratio),
        ("exposure effect", exposure_effect),
        ("jitter degradation", jitter_degradation),
        ("mc vs analytic", mc_agreement),
        ("exact distribution", exact_distribution),
        ("exact vs approx rmse", exact_vs_approx),
        ("variance peak", variance_peak),
        ("soft saturation", soft_saturation),
        ("timestamp mle", mle_property),
        ("qis comparison", qis_comparison),
        ("image pipeline", image_pipeline),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
